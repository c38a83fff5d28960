//! Device counts and per-wavelength cost coefficients.
//!
//! Device counts are evaluated per link: the coefficient multiplying the
//! wavelengths reserved, used or bought on link (i, n) is built from that
//! link's own device term rather than from the sum over the whole route.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Phase {
    /// First-stage reservation.
    #[serde(rename = "r")]
    Reservation,
    /// Second-stage use of reserved wavelengths.
    #[serde(rename = "e")]
    Utilization,
    /// Second-stage on-demand purchase.
    #[serde(rename = "o")]
    OnDemand,
}

/// Unit prices of one phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DevicePrices {
    pub tx: f64,
    pub rx: f64,
    pub km: f64,
    pub si: f64,
    pub md: f64,
    pub ch: f64,
}

impl DevicePrices {
    fn values(&self) -> [(&'static str, f64); 6] {
        [
            ("tx", self.tx),
            ("rx", self.rx),
            ("km", self.km),
            ("si", self.si),
            ("md", self.md),
            ("ch", self.ch),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriceTable {
    pub r: DevicePrices,
    pub e: DevicePrices,
    pub o: DevicePrices,
}

impl PriceTable {
    /// Reservation and utilization share the published reservation prices;
    /// on-demand prices are the higher second-stage values.
    pub fn table_one() -> Self {
        let base = DevicePrices {
            tx: 1500.0,
            rx: 2250.0,
            km: 1200.0,
            si: 150.0,
            md: 300.0,
            ch: 1.0,
        };
        PriceTable {
            r: base,
            e: base,
            o: DevicePrices {
                tx: 6000.0,
                rx: 9000.0,
                km: 3000.0,
                si: 500.0,
                md: 900.0,
                ch: 4.0,
            },
        }
    }

    /// Every device free except the fibre channel.
    pub fn channel_only(r: f64, e: f64, o: f64) -> Self {
        let p = |ch| DevicePrices {
            tx: 0.0,
            rx: 0.0,
            km: 0.0,
            si: 0.0,
            md: 0.0,
            ch,
        };
        PriceTable { r: p(r), e: p(e), o: p(o) }
    }

    pub fn phase(&self, phase: Phase) -> &DevicePrices {
        match phase {
            Phase::Reservation => &self.r,
            Phase::Utilization => &self.e,
            Phase::OnDemand => &self.o,
        }
    }

    /// Rejects negative prices; logs a warning for any class whose on-demand
    /// price is below its utilization price.
    pub fn validate(&self) -> Result<()> {
        for (phase, prices) in [("r", &self.r), ("e", &self.e), ("o", &self.o)] {
            for (name, v) in prices.values() {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(Error::Parameter(format!("price {phase}.{name} must be >= 0, got {v}")));
                }
            }
        }
        for ((name, e), (_, o)) in self.e.values().into_iter().zip(self.o.values()) {
            if o < e {
                log::warn!("on-demand price for `{name}` ({o}) is below its utilization price ({e})");
            }
        }
        Ok(())
    }

    /// Multiplies the channel price of every phase.
    pub fn with_channel_multiplier(&self, m: f64) -> Self {
        let mut out = *self;
        out.r.ch *= m;
        out.e.ch *= m;
        out.o.ch *= m;
        out
    }
}

fn default_span() -> f64 {
    160.0
}
fn default_three() -> u32 {
    3
}
fn default_one() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicalParams {
    /// Distance between two connected transmitters, km.
    #[serde(default = "default_span")]
    pub span_km: f64,
    /// Secret-key rate supported by one parallel QKD link over `span_km`, kbps.
    pub key_rate_per_link: f64,
    #[serde(default = "default_three")]
    pub qkd_wavelengths_per_link: u32,
    #[serde(default = "default_one")]
    pub km_wavelengths_per_link: u32,
    /// Energy cost charged each time a route enters a node.
    #[serde(default)]
    pub energy_cost_per_node: std::collections::BTreeMap<String, f64>,
}

impl PhysicalParams {
    pub fn new(span_km: f64, key_rate_per_link: f64) -> Self {
        PhysicalParams {
            span_km,
            key_rate_per_link,
            qkd_wavelengths_per_link: 3,
            km_wavelengths_per_link: 1,
            energy_cost_per_node: Default::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.span_km.is_finite() && self.span_km > 0.0) {
            return Err(Error::Parameter(format!("span_km must be > 0, got {}", self.span_km)));
        }
        if !(self.key_rate_per_link.is_finite() && self.key_rate_per_link > 0.0) {
            return Err(Error::Parameter(format!(
                "key_rate_per_link must be > 0, got {}",
                self.key_rate_per_link
            )));
        }
        if self.qkd_wavelengths_per_link != 3 || self.km_wavelengths_per_link != 1 {
            return Err(Error::Parameter(
                "a QKD link occupies exactly 3 wavelengths and a KM link exactly 1".into(),
            ));
        }
        for (node, v) in &self.energy_cost_per_node {
            if !(v.is_finite() && *v >= 0.0) {
                return Err(Error::Parameter(format!("energy cost of node `{node}` must be >= 0")));
            }
        }
        Ok(())
    }

    pub fn energy_cost(&self, node: &str) -> f64 {
        self.energy_cost_per_node.get(node).copied().unwrap_or(0.0)
    }

    pub fn parallel_links(&self, rate: f64) -> u32 {
        parallel_links(rate, self.key_rate_per_link).expect("validated key rate")
    }
}

/// Number of parallel QKD links needed for `secret_key_rate`.
pub fn parallel_links(secret_key_rate: f64, key_rate_per_link: f64) -> Result<u32> {
    if !(key_rate_per_link.is_finite() && key_rate_per_link > 0.0) {
        return Err(Error::Parameter(format!("key rate per link must be > 0, got {key_rate_per_link}")));
    }
    if !(secret_key_rate.is_finite() && secret_key_rate >= 0.0) {
        return Err(Error::Parameter(format!("secret-key rate must be >= 0, got {secret_key_rate}")));
    }
    Ok((secret_key_rate / key_rate_per_link).ceil() as u32)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DeviceCounts {
    pub tx: u64,
    pub rx: u64,
    pub km: u64,
    pub si: u64,
    pub md: u64,
}

/// Device counts for a single link carrying `parallel` QKD links.
pub fn per_link_device_counts(link_km: f64, parallel: u32, span_km: f64) -> Result<DeviceCounts> {
    if !(link_km.is_finite() && link_km > 0.0) {
        return Err(Error::Parameter(format!("link length must be > 0, got {link_km}")));
    }
    if !(span_km.is_finite() && span_km > 0.0) {
        return Err(Error::Parameter(format!("span must be > 0, got {span_km}")));
    }
    let ratio = link_km / span_km;
    let hops = ratio.ceil() as u64;
    let p = parallel as u64;
    let si = (ratio - 1.0).ceil().max(0.0) as u64;
    Ok(DeviceCounts {
        tx: 2 * p * hops,
        rx: p * hops,
        km: (ratio + 1.0).ceil() as u64,
        si,
        md: hops + si,
    })
}

/// Wavelength-km occupied by `parallel` QKD links plus the KM link.
pub fn link_channel_cost(link_km: f64, parallel: u32) -> f64 {
    3.0 * parallel as f64 * link_km + link_km
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coefficients {
    pub per_qkd_wavelength: f64,
    pub per_km_wavelength: f64,
}

/// Per-wavelength objective coefficients for one link and one phase.
pub fn objective_coefficients(
    link_km: f64,
    parallel: u32,
    prices: &PriceTable,
    params: &PhysicalParams,
    phase: Phase,
) -> Result<Coefficients> {
    let a = per_link_device_counts(link_km, parallel, params.span_km)?;
    let b = prices.phase(phase);
    let per_qkd = (a.tx as f64 * b.tx + a.rx as f64 * b.rx) / 3.0 + link_km * b.ch;
    let per_km = a.km as f64 * b.km + a.si as f64 * b.si + a.md as f64 * b.md + link_km * b.ch;
    Ok(Coefficients {
        per_qkd_wavelength: per_qkd,
        per_km_wavelength: per_km,
    })
}
