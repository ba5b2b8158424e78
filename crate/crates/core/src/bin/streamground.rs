fn main() {
    std::process::exit(streamground::cli::dispatch(std::env::args_os()));
}
