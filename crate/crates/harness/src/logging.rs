/// Installs the global logger. `STACKELBERG_LOG` takes `off`, `info`,
/// `debug` or any other env_logger filter; unset means `warn`.
pub fn init() {
    let env = env_logger::Env::new().filter_or("STACKELBERG_LOG", "warn");
    // a second call (tests) keeps the first logger
    let _ = env_logger::Builder::from_env(env).try_init();
}
