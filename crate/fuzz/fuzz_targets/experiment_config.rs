#![no_main]
use dalab::experiment::ExperimentConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|s: &str| {
    if let Ok(c) = ExperimentConfig::parse(s) {
        let t = c.to_toml().expect("serialize accepted config");
        assert_eq!(ExperimentConfig::parse(&t).expect("reparse"), c);
    }
});
