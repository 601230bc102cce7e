fn main() {
    std::process::exit(peos::cli::run(std::env::args_os()));
}
