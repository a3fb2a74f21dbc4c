#!/usr/bin/env python3
"""Train the baseline tagger on the synthetic corpus in both tag modes and
print the model-comparison table (weighted F-1 and training time), plus a
5-fold cross-validation summary.

Usage: python scripts/run_synthetic_experiment.py [--n 1000] [--seed 42]
"""

import argparse
import time

from avdkit.evaluation import cross_validate, generate_synthetic_corpus, weighted_f1
from avdkit.labels import TagMode, strip_categories
from avdkit.tagger import TrainConfig, train_baseline


def holdout_run(corpus, tag_mode, seed):
    split = int(len(corpus) * 0.8)
    train, test = corpus[:split], corpus[split:]
    started = time.perf_counter()
    model = train_baseline(train, TrainConfig(epochs=15, seed=seed, tag_mode=tag_mode))
    elapsed = time.perf_counter() - started
    report = weighted_f1([g for _, g in test], [model.predict(t) for t, _ in test])
    return report.weighted_f1, elapsed


def fmt_time(seconds):
    minutes, secs = divmod(seconds, 60)
    return f"{int(minutes)}min {secs:.0f}s"


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--n", type=int, default=1000)
    parser.add_argument("--seed", type=int, default=42)
    parser.add_argument("--folds", type=int, default=5)
    args = parser.parse_args()

    corpus55 = generate_synthetic_corpus(args.n, seed=args.seed)
    corpus7 = [(t, strip_categories(g)) for t, g in corpus55]

    print(f"synthetic corpus: {args.n} sentences, seed {args.seed}\n")
    print(f"{'model':<42}{'weighted F-1':<16}{'training time'}")
    rows = []
    for mode, corpus in ((TagMode.BASE7, corpus7), (TagMode.COMBINED55, corpus55)):
        f1, elapsed = holdout_run(corpus, mode, args.seed)
        rows.append((mode, f1, elapsed))
        name = f"baseline-perceptron ({mode.value}, hold-out)"
        print(f"{name:<42}{f1:<16.4f}{fmt_time(elapsed)}")

    for mode, corpus in ((TagMode.BASE7, corpus7), (TagMode.COMBINED55, corpus55)):
        def trainer(train):
            return train_baseline(train, TrainConfig(epochs=15, seed=args.seed, tag_mode=mode))
        cv = cross_validate(trainer, corpus, k=args.folds, seed=args.seed)
        name = f"baseline-perceptron ({mode.value}, {args.folds}-fold)"
        print(f"{name:<42}{cv.mean_weighted_f1:<16.4f}{fmt_time(cv.total_training_time)}")


if __name__ == "__main__":
    main()
