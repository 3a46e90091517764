fn main() {
    std::process::exit(subspace_forecast::cli::main_with_args(std::env::args_os()));
}
