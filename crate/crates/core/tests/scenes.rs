use std::path::PathBuf;

use affnorm::synth::SceneSpec;

fn scene(name: &str) -> SceneSpec {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenes").join(name);
    SceneSpec::load(path).unwrap()
}

#[test]
fn shipped_scenes_match_builtins() {
    assert_eq!(scene("sphere.scn"), SceneSpec::sphere_benchmark());
    assert_eq!(scene("boxes.scn"), SceneSpec::boxes_benchmark());
}

#[test]
fn builtin_scenes_roundtrip_through_toml() {
    for s in [SceneSpec::sphere_benchmark(), SceneSpec::boxes_benchmark()] {
        assert_eq!(SceneSpec::from_toml(&s.to_toml()).unwrap(), s);
    }
}
