fn main() {
    std::process::exit(partprior::cli::run(std::env::args_os()));
}
