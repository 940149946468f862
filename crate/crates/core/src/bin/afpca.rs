fn main() {
    std::process::exit(afpca::cli::cli_main(std::env::args_os()));
}
