use super::error::DataError;
use super::log::InteractionLog;

/// Repeatedly drops users and items with fewer than `n` interactions until
/// nothing changes, then re-densifies ids over the survivors.
pub fn n_core_filter(log: &InteractionLog, n: usize) -> Result<InteractionLog, DataError> {
    if n == 0 {
        return Err(DataError::InvalidCore);
    }
    let mut events = log.interactions.clone();
    loop {
        let mut user_count = vec![0usize; log.n_users() + 1];
        let mut item_count = vec![0usize; log.n_items() + 1];
        for e in &events {
            user_count[e.user] += 1;
            item_count[e.item] += 1;
        }
        let before = events.len();
        events.retain(|e| user_count[e.user] >= n && item_count[e.item] >= n);
        if events.len() == before {
            break;
        }
    }
    Ok(log.redensify(events))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ingest_reader;

    fn log(rows: &[(&str, &str)]) -> InteractionLog {
        let mut csv = String::from("user_id,item_id,timestamp\n");
        for (t, (u, i)) in rows.iter().enumerate() {
            csv.push_str(&format!("{u},{i},{t}\n"));
        }
        ingest_reader(csv.as_bytes()).unwrap()
    }

    #[test]
    fn cascade_to_empty() {
        let l = log(&[("u1", "i1"), ("u1", "i2"), ("u2", "i1")]);
        let out = n_core_filter(&l, 2).unwrap();
        assert!(out.is_empty());
        assert_eq!(out.n_users(), 0);
    }

    #[test]
    fn already_core_is_unchanged() {
        let l = log(&[("a", "x"), ("a", "y"), ("b", "x"), ("b", "y")]);
        assert_eq!(n_core_filter(&l, 2).unwrap(), l);
    }

    #[test]
    fn ids_redensified() {
        let l = log(&[("a", "x"), ("b", "x"), ("a", "y"), ("c", "z"), ("b", "y")]);
        let out = n_core_filter(&l, 2).unwrap();
        assert_eq!(out.len(), 4);
        assert_eq!(out.n_users(), 2);
        assert_eq!(out.users.get("b"), Some(2));
        assert!(out.items.get("z").is_none());
    }

    #[test]
    fn zero_rejected() {
        let l = log(&[("a", "x")]);
        assert!(n_core_filter(&l, 0).is_err());
    }
}
