fn main() {
    eprintln!("eqed CLI: not wired up yet");
}
