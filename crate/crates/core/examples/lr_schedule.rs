//! Step-decay presets for both streams.

use twostream::model::Stream;
use twostream::schedule::StepSchedule;

fn main() {
    for stream in [Stream::Spatial, Stream::Temporal] {
        let s = StepSchedule::preset(stream);
        print!("{stream:<9}");
        for it in [0, s.step_iters - 1, s.step_iters, 2 * s.step_iters, s.stop_iter - 1, s.stop_iter] {
            match s.lr_at(it) {
                Some(lr) => print!("  {it}: {lr:e}"),
                None => print!("  {it}: done"),
            }
        }
        println!("  ({} distinct rates)", s.distinct_rates());
    }
}
