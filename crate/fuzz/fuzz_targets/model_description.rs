#![no_main]
use dalab::describe::ModelDescription;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|s: &str| {
    if let Ok(d) = ModelDescription::parse(s) {
        // anything accepted must survive a re-serialization
        let t = d.to_toml().expect("serialize accepted description");
        assert_eq!(ModelDescription::parse(&t).expect("reparse"), d);
    }
});
