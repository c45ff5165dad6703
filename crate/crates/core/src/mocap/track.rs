use super::Point3;

fn dist2(a: &Point3, b: &Point3) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

/// Greedy nearest-centroid linking. `frames[t]` holds the centroids of the
/// people found at frame `t`; the result gives each one a track index.
/// Closest pairs are linked first (ties to the lowest indices); people left
/// over open new tracks.
pub fn track_identities(frames: &[Vec<Point3>]) -> Vec<Vec<usize>> {
    let mut last: Vec<Point3> = Vec::new();
    let mut out = Vec::with_capacity(frames.len());
    for people in frames {
        let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(last.len() * people.len());
        for (k, prev) in last.iter().enumerate() {
            for (i, cur) in people.iter().enumerate() {
                pairs.push((dist2(prev, cur), k, i));
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut ids = vec![usize::MAX; people.len()];
        let mut taken = vec![false; last.len()];
        for (_, k, i) in pairs {
            if !taken[k] && ids[i] == usize::MAX {
                taken[k] = true;
                ids[i] = k;
            }
        }
        for (i, id) in ids.iter_mut().enumerate() {
            if *id == usize::MAX {
                *id = last.len();
                last.push(people[i]);
            }
        }
        for (i, &id) in ids.iter().enumerate() {
            last[id] = people[i];
        }
        out.push(ids);
    }
    out
}
