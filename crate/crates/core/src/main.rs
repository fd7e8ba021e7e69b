fn main() {
    std::process::exit(rxkernel::cli::run(std::env::args_os()));
}
