fn main() {
    std::process::exit(vix_mlmc::cli::main_with_args(std::env::args_os()));
}
