use sdot_geodesic_demo::{geodesic_json, partition_json, transport_json};
use serde_json::Value;

fn parse(s: &str) -> Value {
    serde_json::from_str(s).unwrap()
}

#[test]
fn partition_of_the_square() {
    let v = parse(&partition_json("square", 9).unwrap());
    assert_eq!(v["regions"].as_array().unwrap().len(), 9);
    assert!(v["barycenters"][4][0].as_f64().unwrap().abs() < 1e-12);
}

#[test]
fn inadmissible_disk_size_names_alternatives() {
    let e = partition_json("disk", 10).unwrap_err();
    assert!(e.contains("try one of"), "{e}");
    assert!(partition_json("torus", 4).is_err());
    assert!(partition_json("square", 0).is_err());
}

#[test]
fn transport_cells_have_equal_area() {
    let coords = [-0.3, -0.2, 0.1, 0.35, 0.25, -0.1, 0.0, 0.0];
    let v = parse(&transport_json("square", &coords).unwrap());
    for cell in v["cells"].as_array().unwrap() {
        let pts: Vec<(f64, f64)> =
            cell.as_array().unwrap().iter().map(|p| (p[0].as_f64().unwrap(), p[1].as_f64().unwrap())).collect();
        let area: f64 = (0..pts.len())
            .map(|i| {
                let (a, b) = (pts[i], pts[(i + 1) % pts.len()]);
                0.5 * (a.0 * b.1 - a.1 * b.0)
            })
            .sum();
        assert!((area - 0.25).abs() < 1e-7, "{area}");
    }
    assert!(v["cost"].as_f64().unwrap() > 0.0);
    assert!(transport_json("square", &[0.1, 0.1, 0.1, 0.1]).is_err());
    assert!(transport_json("square", &[0.1]).is_err());
}

#[test]
fn small_rotation_geodesic() {
    let v = parse(&geodesic_json("disk_rotation", 1.0, 12, 4, 0).unwrap());
    let frames = v["frames"].as_array().unwrap();
    assert_eq!(frames.len(), 5);
    assert_eq!(frames[0].as_array().unwrap().len(), 12);
    assert!(v["classical_threshold"].as_bool().unwrap());
    assert!(v["e_prime"].as_f64().unwrap() >= v["energy"].as_f64().unwrap());
    assert!(geodesic_json("disk_rotation", -1.0, 12, 4, 0).is_err());
    assert!(geodesic_json("square_beltrami", 0.5, 10_000, 4, 0).is_err());
}
