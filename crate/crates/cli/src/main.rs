fn main() {
    std::process::exit(scamdyn_cli::main_with_args(std::env::args_os()));
}
