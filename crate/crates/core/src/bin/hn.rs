fn main() {
    std::process::exit(hatano_nelson::cli::main_with_args(std::env::args_os()));
}
