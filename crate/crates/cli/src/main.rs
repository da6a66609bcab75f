fn main() {
    std::process::exit(switchdiff_cli::run(std::env::args_os()));
}
