fn main() {
    std::process::exit(plateau::cli_io::run(std::env::args_os()));
}
