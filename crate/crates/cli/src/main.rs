fn main() {
    std::process::exit(mmgan_cli::run(std::env::args_os()));
}
