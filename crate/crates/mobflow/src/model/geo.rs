use super::ModelError;

/// Mean Earth radius in kilometres (IUGG value).
const EARTH_RADIUS_KM: f64 = 6371.0088;

/// Great-circle distance between two points given in decimal degrees.
pub fn haversine_km(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> Result<f64, ModelError> {
    for &(lat, lon) in &[(lat1, lon1), (lat2, lon2)] {
        let ok = lat.is_finite() && lon.is_finite() && lat.abs() <= 90.0 && lon.abs() <= 180.0;
        if !ok {
            return Err(ModelError::InvalidCoordinate { lat, lon });
        }
    }
    let phi1 = lat1.to_radians();
    let phi2 = lat2.to_radians();
    let dphi = (lat2 - lat1).to_radians();
    let dlambda = (lon2 - lon1).to_radians();
    let a = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    // Clamp guards against rounding pushing the argument past 1 for
    // near-antipodal pairs.
    let c = 2.0 * a.sqrt().min(1.0).asin();
    Ok(EARTH_RADIUS_KM * c)
}
