use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Frequency {
    #[serde(rename = "868")]
    Mhz868,
    #[serde(rename = "915")]
    Mhz915,
}

impl Frequency {
    pub const ALL: [Frequency; 2] = [Frequency::Mhz868, Frequency::Mhz915];

    pub fn hz(self) -> f64 {
        match self {
            Frequency::Mhz868 => 868e6,
            Frequency::Mhz915 => 915e6,
        }
    }

    pub fn mhz(self) -> u32 {
        match self {
            Frequency::Mhz868 => 868,
            Frequency::Mhz915 => 915,
        }
    }

    pub fn from_mhz(mhz: u32) -> Option<Self> {
        match mhz {
            868 => Some(Frequency::Mhz868),
            915 => Some(Frequency::Mhz915),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modulation {
    Fsk2,
    Gfsk2,
}

impl Modulation {
    pub const ALL: [Modulation; 2] = [Modulation::Gfsk2, Modulation::Fsk2];

    pub fn label(self) -> &'static str {
        match self {
            Modulation::Fsk2 => "FSK",
            Modulation::Gfsk2 => "GFSK",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DataRate {
    #[serde(rename = "1.2")]
    Kbps1_2,
    #[serde(rename = "38.4")]
    Kbps38_4,
    #[serde(rename = "250")]
    Kbps250,
}

impl DataRate {
    pub const ALL: [DataRate; 3] = [DataRate::Kbps250, DataRate::Kbps38_4, DataRate::Kbps1_2];

    pub fn bits_per_second(self) -> f64 {
        match self {
            DataRate::Kbps1_2 => 1_200.0,
            DataRate::Kbps38_4 => 38_400.0,
            DataRate::Kbps250 => 250_000.0,
        }
    }

    pub fn kbps(self) -> f64 {
        self.bits_per_second() / 1000.0
    }

    pub fn from_kbps(kbps: f64) -> Option<Self> {
        DataRate::ALL.into_iter().find(|r| (r.kbps() - kbps).abs() < 1e-9)
    }

    /// Time to clock `bytes` over the air.
    pub fn airtime(self, bytes: usize) -> f64 {
        (bytes * 8) as f64 / self.bits_per_second()
    }

    /// Wall time of one complete measurement round, as timed on the bench.
    pub fn measurement_duration(self) -> f64 {
        match self {
            DataRate::Kbps250 => 1.4e-3,
            DataRate::Kbps38_4 => 4.3e-3,
            DataRate::Kbps1_2 => 110e-3,
        }
    }
}

/// Independent variables of a campaign.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RfSettings {
    pub frequency: Frequency,
    pub modulation: Modulation,
    pub data_rate: DataRate,
    /// dBm
    #[serde(default)]
    pub tx_power: f64,
}

impl RfSettings {
    pub fn new(frequency: Frequency, modulation: Modulation, data_rate: DataRate) -> Self {
        Self { frequency, modulation, data_rate, tx_power: 0.0 }
    }

    /// 868 MHz, 2-FSK, 250 kb/s: the best-performing configuration.
    pub fn reference() -> Self {
        Self::new(Frequency::Mhz868, Modulation::Fsk2, DataRate::Kbps250)
    }

    /// Rows of the batch-size table. 1.2 kb/s was only characterised with GFSK.
    pub fn table_rows() -> Vec<RfSettings> {
        let mut rows = Vec::new();
        for rate in DataRate::ALL {
            for modulation in Modulation::ALL {
                if rate == DataRate::Kbps1_2 && modulation == Modulation::Fsk2 {
                    continue;
                }
                for frequency in Frequency::ALL {
                    rows.push(RfSettings::new(frequency, modulation, rate));
                }
            }
        }
        rows
    }
}

impl fmt::Display for RfSettings {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}kbps-{}-{}MHz",
            self.data_rate.kbps(),
            self.modulation.label(),
            self.frequency.mhz()
        )
    }
}
