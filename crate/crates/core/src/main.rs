use std::process::ExitCode;

fn main() -> ExitCode {
    photomesh::cli::main()
}
