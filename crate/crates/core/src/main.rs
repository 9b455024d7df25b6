fn main() {
    std::process::exit(whitham_lab::cli::dispatch(std::env::args_os()));
}
