import math

import pytest

import treealign


def test_version():
    assert treealign.__version__


def test_tasks_and_gold():
    tasks = treealign.generate_tasks(3, 5)
    assert len(tasks) == 5
    assert tasks == treealign.generate_tasks(3, 5)
    gold = treealign.gold_trajectory(tasks[0])
    assert gold["task_id"] == tasks[0]["task_id"]
    assert gold["steps"]


def test_iou_and_loss():
    assert treealign.compute_iou((0, 0, 2, 2), (1, 0, 3, 2)) == pytest.approx(1 / 3)
    assert treealign.masked_bce([0.5], [1], [1]) == pytest.approx(math.log(2), abs=1e-12)
    assert treealign.masked_bce([0.5], [1], [0]) == 0.0
    assert treealign.auc([0.9, 0.1], [1, 0]) == 1.0


def test_drop_moment():
    delta, index, triggered = treealign.drop_moment([0.966, 0.228], 0.3)
    assert delta == pytest.approx(0.738, abs=1e-12)
    assert index == 1
    assert triggered
    assert treealign.drop_moment([0.5], 0.3)[1] is None


def test_tree_values():
    task = treealign.generate_tasks(4, 1)[0]
    tree = treealign.build_tree(task, config={"branch_n": 2, "rollouts_t": 2, "rounds_k": 1})
    values = treealign.mc_values(tree)
    assert len(values) == len(tree["nodes"])
    node, succ, total, value = values[0]
    assert node == 0 and total > 0
    assert value == succ / total


def test_errors_surface():
    with pytest.raises(treealign.TreeAlignError):
        treealign.drop_moment([], 0.3)
    with pytest.raises(treealign.TreeAlignError):
        treealign.generate_tasks(0, 1, {"synth": {"bogus": 1}})


def test_tiny_pipeline(tmp_path):
    cfg = treealign.default_config()
    cfg["synth"]["count"] = 6
    cfg["sft"].update(tasks=8, steps=3)
    cfg["tree"].update(branch_n=2, rollouts_t=2, rounds_k=1)
    cfg["corpus"].update(tree_tasks=2, gold_tasks=30)
    cfg["prm"]["epochs"] = 1
    cfg["align"].update(modes=["vanilla"], steps=1, batch_tasks=2, eval_samples=2)
    cfg["tts"].update(budgets=[1, 2], seeds=2, tasks=3)
    manifest = treealign.run_pipeline(cfg, tmp_path / "run")
    assert [s["name"] for s in manifest["stages"]][-1] == "eval"
    assert treealign.verify_run(tmp_path / "run") == []
