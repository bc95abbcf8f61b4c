fn main() {
    std::process::exit(vae_lab_cli::run(std::env::args_os()));
}
