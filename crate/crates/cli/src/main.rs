fn main() {
    std::process::exit(mfg_antimono_cli::run(std::env::args_os()));
}
