fn main() {
    std::process::exit(wavekin::cli::main_with_args(std::env::args_os()));
}
