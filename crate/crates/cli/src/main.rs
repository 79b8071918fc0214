fn main() {
    std::process::exit(mtaf_cli::main_with(std::env::args_os()));
}
