fn main() {
    let code = sdwave::harness::main_entry(std::env::args_os());
    std::process::exit(code);
}
