fn main() {
    std::process::exit(mhccl::cli::main_with_args(std::env::args_os()));
}
