fn main() {
    std::process::exit(prompt_story::cli::run_cli(std::env::args_os()));
}
