fn main() -> std::process::ExitCode {
    tvlp::cli::main()
}
