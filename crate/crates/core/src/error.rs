use thiserror::Error;

use crate::world::CarId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("invalid road network: {0}")]
    InvalidNetwork(String),
    #[error("invalid IDM parameters: {0}")]
    InvalidParams(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("two distinct car states share id {0}")]
    DuplicateId(CarId),
    #[error("cars {follower} and {leader} are on different roads")]
    RoadMismatch { follower: CarId, leader: CarId },
    #[error("point {point} is not reachable by car {car}")]
    Unreachable { car: CarId, point: f64 },
    #[error("collision between follower {follower} and leader {leader} at t = {time} s (gap {gap} m)")]
    Collision {
        follower: CarId,
        leader: CarId,
        time: f64,
        gap: f64,
    },
    #[error("density {density} cars/km is geometrically infeasible on this loop")]
    InfeasibleDensity { density: f64 },
}

pub type Result<T, E = SimError> = std::result::Result<T, E>;
