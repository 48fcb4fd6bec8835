fn main() {
    std::process::exit(wordcrf::cli::run(std::env::args_os()));
}
