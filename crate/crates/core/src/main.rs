fn main() {
    std::process::exit(spkdlg::cli::main_with(std::env::args_os()));
}
