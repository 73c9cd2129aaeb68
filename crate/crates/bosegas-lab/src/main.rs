fn main() -> std::process::ExitCode {
    bosegas_lab::cli::main()
}
