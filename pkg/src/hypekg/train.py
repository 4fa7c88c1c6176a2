"""End-to-end training and evaluation runs."""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import checkpoint as ck
from . import data
from . import graddiff as gd
from . import model as M
from .config import RunConfig
from .errors import DataError, NumericError
from .evalkit.metrics import evaluate
from .optim import OptimState, step

log = logging.getLogger(__name__)


@dataclass
class TrainResult:
    checkpoint: ck.Checkpoint
    bundle: data.SplitBundle
    train_queries: dict
    history: list = field(default_factory=list)
    skipped: list = field(default_factory=list)

    @property
    def store(self) -> M.ParameterStore:
        return self.checkpoint.store


def load_dataset(config: RunConfig) -> data.TripleStore:
    if not config.dataset:
        raise DataError("no dataset given")
    kg = data.load_tsv(config.dataset)
    return encode(kg, config)


def encode(kg: data.TripleStore, config: RunConfig) -> data.TripleStore:
    if config.depth_encoding == "none":
        return kg
    return data.depth_encode(kg, config.depth_encoding)


def make_split(kg: data.TripleStore, config: RunConfig) -> data.SplitBundle:
    return data.split(kg, config.ratios, seed=config.seed,
                      require_coverage=config.split_coverage == "strict")


def sample_pools(bundle, structures, count, seed, attempts, **kw):
    """Query pools per structure; structures the graph cannot realize are skipped with a warning."""
    pools, skipped = {}, []
    for i, tag in enumerate(structures):
        try:
            pools[tag] = data.sample_queries(bundle, tag, count, seed=seed * 1000 + i,
                                             max_attempts=attempts, **kw)
        except data.UnrealizableStructure as exc:
            log.warning("skipping %s: %s", tag, exc)
            skipped.append(tag)
    return pools, skipped


def _loss_and_grads(asts, pos, neg, params, cfg, threads):
    fn = lambda P, a, p, n: M.batch_loss(a, p, n, P, cfg)
    if threads <= 1 or len(asts) < 2 * threads:
        return gd.value_and_grad(lambda P: fn(P, asts, pos, neg), params)
    bounds = np.linspace(0, len(asts), threads + 1).astype(int)
    parts = [(asts[a:b], pos[a:b], neg[a:b]) for a, b in zip(bounds[:-1], bounds[1:])]
    with ThreadPoolExecutor(threads) as ex:
        results = list(ex.map(lambda part: gd.value_and_grad(lambda P: fn(P, *part), params), parts))
    # fixed-order reduction keeps threaded runs reproducible
    loss = sum(r[0] for r in results)
    grads = {k: sum(r[1][k] for r in results[1:]) + results[0][1][k] for k in params}
    return loss, grads


def _draw_batch(pool, size, rng, n_entities, k):
    idx = rng.integers(len(pool), size=size)
    chosen = [pool[i] for i in idx]
    pos = np.array([sorted(s.answers)[rng.integers(len(s.answers))] for s in chosen])
    neg = data.batch_negatives([s.answers for s in chosen], k, n_entities, rng)
    return [s.ast for s in chosen], pos, neg


def _snapshot(store, bundle, config, step_no, metrics):
    return ck.Checkpoint(store.copy(), bundle.train.entities, bundle.train.relations, config,
                         step_no, metrics)


def run_train(config: RunConfig, kg: data.TripleStore | None = None, out=None,
              bundle: data.SplitBundle | None = None, pools: dict | None = None,
              init_hook=None) -> TrainResult:
    """Train from scratch.  ``kg`` overrides ``config.dataset`` (already encoded).

    ``init_hook(store)`` may adjust the freshly initialised parameters in place.
    """
    if bundle is None:
        kg = kg if kg is not None else load_dataset(config)
        bundle = make_split(kg, config)
    mc = config.model_config()
    skipped = []
    if pools is None:
        pools, skipped = sample_pools(bundle, mc.query_mix, config.queries_per_structure, config.seed,
                                      config.sample_attempts)
    order = [t for t in mc.query_mix if pools.get(t)]
    rng = np.random.default_rng(config.seed)
    store = M.ParameterStore.init(bundle.train.n_entities, bundle.train.n_relations, mc, rng)
    if init_hook is not None:
        init_hook(store)
    state = OptimState(config.lr, config.beta1, config.beta2, config.adam_eps, config.constant_speed)
    valid = []
    if config.eval_every and "1t" in mc.query_mix:
        try:
            valid = data.sample_queries(bundle, "1t", config.eval_queries, seed=config.seed + 1,
                                        answer_graph="full", split_name="valid",
                                        max_attempts=config.sample_attempts)
        except data.UnrealizableStructure as exc:
            log.warning("no validation queries: %s", exc)
    history = []
    last_good = _snapshot(store, bundle, config, 0, {})
    n_ent, k = bundle.train.n_entities, mc.negatives
    for epoch in range(1, config.epochs + 1):
        t0 = time.perf_counter()
        state.lr = config.lr_at(epoch)
        try:
            if config.strict_algorithm1:
                losses, total = [], None
                for tag in order:
                    asts, pos, neg = _draw_batch(pools[tag], config.batch_size, rng, n_ent, k)
                    loss, grads = _loss_and_grads(asts, pos, neg, store.arrays, mc, config.threads)
                    losses.append(loss)
                    total = grads if total is None else {n: total[n] + grads[n] for n in grads}
                if total is not None:
                    store.arrays = step(store.arrays, total, state, store.kinds, mc.curvature)
            else:
                losses = []
                for tag in order:
                    asts, pos, neg = _draw_batch(pools[tag], config.batch_size, rng, n_ent, k)
                    loss, grads = _loss_and_grads(asts, pos, neg, store.arrays, mc, config.threads)
                    losses.append(loss)
                    store.arrays = step(store.arrays, grads, state, store.kinds, mc.curvature)
            if not np.all(np.isfinite(losses)):
                raise NumericError(f"non-finite loss at epoch {epoch}")
        except NumericError:
            if out is not None:
                ck.save(out, last_good)
                log.error("numeric failure; wrote last good checkpoint (epoch %d) to %s", last_good.step, out)
            raise
        entry = {"epoch": epoch, "loss": float(np.sum(losses)) / max(1, len(losses) * config.batch_size),
                 "seconds": time.perf_counter() - t0}
        if valid and epoch % config.eval_every == 0:
            entry["valid_1t"] = evaluate(valid, store.arrays, mc)["1t"]
        history.append(entry)
        log.info("epoch %d loss %.5f", epoch, entry["loss"])
        last_good = _snapshot(store, bundle, config, state.t, {})
    result_ck = ck.Checkpoint(store, bundle.train.entities, bundle.train.relations, config, state.t,
                              {"final_loss": history[-1]["loss"] if history else None})
    if out is not None:
        ck.save(out, result_ck)
    return TrainResult(result_ck, bundle, pools, history, skipped)


def held_out_queries(bundle, structures, count, seed, attempts, split_name="test"):
    pools, _ = sample_pools(bundle, structures, count, seed, attempts, answer_graph="full",
                            split_name=split_name)
    return [s for tag in structures for s in pools.get(tag, [])]


def run_eval(ckpt: ck.Checkpoint, samples, top_n=None) -> dict:
    return evaluate(samples, ckpt.store.arrays, ckpt.store.config, top_n)
