fn main() {
    std::process::exit(daa::run());
}
