fn main() {
    std::process::exit(metamorph_cli::cli::run(std::env::args_os()));
}
