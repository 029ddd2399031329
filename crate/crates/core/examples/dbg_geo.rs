use scootnav::geodesy::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
fn main() {
    let frame = EnuFrame::new(GeodeticPoint::new(48.7, 9.1, 0.0).unwrap());
    for radius in [1_000.0, 10_000.0f64] {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut max_err: f64 = 0.0;
        for _ in 0..2000 {
            let p = EnuPoint::new(
                rng.random_range(-radius..radius),
                rng.random_range(-radius..radius),
                rng.random_range(-50.0..50.0),
            );
            let back = frame.to_enu(&frame.from_enu(&p));
            let e = ((back.east - p.east).powi(2) + (back.north - p.north).powi(2) + (back.up - p.up).powi(2)).sqrt();
            max_err = max_err.max(e);
        }
        println!("radius {radius}: max round-trip err = {max_err:e}");
    }
}
