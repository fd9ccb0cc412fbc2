fn main() {
    std::process::exit(mslg_cli::run(std::env::args_os()));
}
