fn main() {
    std::process::exit(fanetsim::cli::main_with(std::env::args_os()));
}
