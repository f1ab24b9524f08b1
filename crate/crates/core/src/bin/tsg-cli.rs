fn main() {
    std::process::exit(tsg::cli::main_with_args(std::env::args_os()));
}
