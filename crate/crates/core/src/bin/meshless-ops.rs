fn main() {
    std::process::exit(meshless_ops::cli::run(std::env::args_os()));
}
