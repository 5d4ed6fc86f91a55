fn main() {
    std::process::exit(pivbench::cli::run(std::env::args_os()));
}
