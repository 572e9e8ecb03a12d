fn main() -> std::process::ExitCode {
    std::process::ExitCode::from(chandisc::cli::run(std::env::args_os()))
}
