fn main() {
    std::process::exit(mono3d_cli::dispatch(std::env::args_os()));
}
