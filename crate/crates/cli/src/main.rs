fn main() {
    std::process::exit(ergopt_cli::main_with(std::env::args_os()));
}
