fn main() {
    std::process::exit(hvsinglet_cli::main_with_args(std::env::args_os()) as i32);
}
