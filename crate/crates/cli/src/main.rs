fn main() {
    std::process::exit(structest_cli::run(std::env::args_os()));
}
