fn main() {
    std::process::exit(tisp::cli::run(std::env::args_os()));
}
