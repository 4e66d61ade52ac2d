fn main() {
    std::process::exit(qest_cli::run_command(std::env::args_os()));
}
