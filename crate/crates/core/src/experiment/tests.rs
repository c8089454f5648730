use super::*;

#[test]
fn task_names_round_trip() {
    for t in Task::ALL {
        assert_eq!(t.to_string().parse::<Task>().unwrap(), t);
    }
    assert!(matches!("nope".parse::<Task>(), Err(ExperimentError::UnknownTask(_))));
}
