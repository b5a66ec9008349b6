fn main() {
    std::process::exit(camcond_cli::main_with(std::env::args_os()));
}
