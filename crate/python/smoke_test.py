"""Smoke test for the scene_embed_py extension module.

Build and copy the module next to this script first:

    cargo build --release -p scene-embed-python --features extension-module
    cp target/release/libscene_embed_py.so python/scene_embed_py.so
    python3 python/smoke_test.py
"""

import math

import scene_embed_py as se


def main():
    scenes = se.SceneSet.generate({"straight_following": 6, "queue_jam": 6, "four_way_intersection": 6}, seed=4)
    assert len(scenes) == 18

    first = scenes.scenes()[0]
    graph = se.build_scene_graph(first, scenes.map_for(first))
    assert len(graph.nodes) == len(first)
    assert all(len(f) == 9 for _, _, f in graph.edges)
    print(graph, graph.features())

    graphs = scenes.build_graphs()
    encoder = se.Encoder(seed=0)
    emb = encoder.encode_many(graphs)
    assert len(emb) == 18 and all(len(e) == 12 for e in emb)
    assert all(math.isfinite(v) for e in emb for v in e)
    assert emb[0] == encoder.encode(graphs[0])

    assert se.euclidean_distance([0.0, 0.0], [3.0, 4.0]) == 5.0
    assert se.triplet_loss(emb[0], emb[0], emb[1], 0.5) >= 0.0

    projected, ratio = se.pca(emb, 2)
    assert len(projected) == 18 and len(ratio) == 2
    report = se.select_clusters(projected, 2, 5)
    labels = [s.location_label for s in scenes.scenes()]
    truth = [sorted(set(labels)).index(l) for l in labels]
    ari = se.adjusted_rand_index(truth, report["assignments"])
    print(f"k={report['selected']} silhouette={report['silhouette']:.3f} ari={ari:.3f}")

    try:
        se.SceneSet.generate({"no_such_template": 1})
    except ValueError as e:
        print("rejected:", e)
    else:
        raise AssertionError("unknown template accepted")
    print("ok")


if __name__ == "__main__":
    main()
