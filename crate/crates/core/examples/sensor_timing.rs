//! The current sensor and ADC, and where the microcontroller time goes in
//! a full training run.

use capnet::mcu::{estimate_runtime, format_duration, sense_current, SensorModel, TimingModel, WorkloadSpec};

fn main() {
    let sensor = SensorModel::default();
    println!("{}-count ADC, {:.3} mA per count", sensor.max_count() + 1, sensor.lsb_amperes() * 1e3);
    // the classifier's sub-milliampere outputs sit inside the zero bin
    for ma in [0.0, 0.2, 20.0, 100.0, 1000.0, -100.0] {
        let c = sense_current(ma * 1e-3, &sensor);
        println!("{ma:>7.1} mA → {c:>4} counts → {:>8.2} mA", sensor.decode(c) * 1e3);
    }

    let workload = WorkloadSpec::default();
    for fast in [true, false] {
        let timing = TimingModel { fast_writes: fast, ..TimingModel::default() };
        let b = estimate_runtime(&workload, &timing);
        println!(
            "\n{} rows, {} pin writes: {} total",
            workload.rows(),
            if fast { "fast" } else { "slow" },
            format_duration(b.total())
        );
        for (name, s) in b.components() {
            println!("  {name:<12} {s:>10.3} s");
        }
        println!("  SD share {:.2}%", 100.0 * b.sd_share());
    }
}
