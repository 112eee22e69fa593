fn main() -> std::process::ExitCode {
    knn_ucb::cli::main()
}
