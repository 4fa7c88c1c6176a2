from .metrics import METRICS, RankedOutput, evaluate, hits_at_k, mrr_paper, mrr_standard, rank
