use std::collections::BTreeMap;

use rand::{Rng, RngExt};
use rand_distr::{Distribution, StandardNormal};

use super::TruthRecord;
use crate::filter::Scan;
use crate::models::{SensorId, SensorModel};

/// Per-step scans of every sensor, in ascending sensor id.
///
/// An existing target is detected with probability `p_D(c)` and yields
/// `h(x)` plus Gaussian noise; detections falling outside a sensor's
/// measurement interval are lost. The clutter points follow the target
/// detection in each scan.
pub fn generate_measurements<R: Rng + ?Sized>(
    truth: &[TruthRecord],
    sensors: &[SensorModel],
    rng: &mut R,
) -> Vec<BTreeMap<SensorId, Scan>> {
    let mut ordered: Vec<&SensorModel> = sensors.iter().collect();
    ordered.sort_by_key(|s| s.id);
    truth
        .iter()
        .map(|record| {
            let mut scans = BTreeMap::new();
            for sensor in &ordered {
                let mut scan = Vec::new();
                if let Some(target) = &record.target {
                    if rng.random::<f64>() < sensor.detection_prob(target.class) {
                        let noise: f64 = StandardNormal.sample(rng);
                        let (h, _) =
                            sensor.measure(&target.state).expect("truth states have the sensor's state dimension");
                        let z = h + sensor.noise_var.sqrt() * noise;
                        if sensor.clutter.contains(z) {
                            scan.push(z);
                        } else {
                            log::debug!("sensor {} lost a detection outside its range", sensor.id);
                        }
                    }
                }
                scan.extend(sensor.clutter.sample(rng));
                scans.insert(sensor.id, scan);
            }
            scans
        })
        .collect()
}
