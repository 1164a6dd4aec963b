fn main() {
    std::process::exit(bhawkes_cli::run_cli(std::env::args_os()));
}
