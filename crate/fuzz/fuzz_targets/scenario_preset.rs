#![no_main]

use libfuzzer_sys::fuzz_target;
use sfpl::simulation::SimulationConfig;

fuzz_target!(|data: &str| {
    if let Ok(cfg) = SimulationConfig::preset(data) {
        cfg.validate().unwrap();
        assert!(cfg.vars <= cfg.objects);
    }
});
