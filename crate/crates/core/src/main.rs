fn main() {
    std::process::exit(rtk_denoise::cli::run(std::env::args_os()));
}
