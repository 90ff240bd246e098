fn main() {
    std::process::exit(uvgpu::cli::main_with_args(std::env::args_os()));
}
