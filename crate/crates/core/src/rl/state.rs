use serde::{Deserialize, Serialize};

use crate::plant::{Disturbance, PlantOutputs, PlantState};

/// Plant state extended with the exogenous signals a policy may react to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RlState {
    pub plant: PlantState,
    pub t_oawb: f64,
    pub q_l_ref: f64,
    pub price: f64,
    /// Backward moving average of the price.
    pub price_avg: f64,
}

impl RlState {
    pub const DIM: usize = 12;

    pub fn new(plant: PlantState, w: &Disturbance, price: f64, price_avg: f64) -> Self {
        Self { plant, t_oawb: w.t_oawb, q_l_ref: w.q_l_ref, price, price_avg }
    }

    pub fn disturbance(&self) -> Disturbance {
        Disturbance { t_oawb: self.t_oawb, q_l_ref: self.q_l_ref }
    }

    pub fn to_array(&self) -> [f64; 12] {
        let p = self.plant.to_array();
        [p[0], p[1], p[2], p[3], p[4], p[5], p[6], p[7], self.t_oawb, self.q_l_ref, self.price, self.price_avg]
    }
}

/// Electricity cost plus `kappa` times the squared load shortfall in MW.
pub fn stage_cost(outputs: &PlantOutputs, q_l_ref: f64, kappa: f64) -> f64 {
    let miss = (outputs.q_l - q_l_ref) / 1000.0;
    outputs.c_e + kappa * miss * miss
}
