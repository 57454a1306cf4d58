fn main() {
    std::process::exit(episode_rating::cli::run(std::env::args_os()));
}
