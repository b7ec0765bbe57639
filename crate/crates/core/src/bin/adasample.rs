fn main() {
    std::process::exit(adasample::commands::main_with_args(std::env::args_os()));
}
