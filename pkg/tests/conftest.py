try:
    import threadpoolctl

    # Small-matrix linear algebra: one BLAS thread is faster than two on a
    # shared box and keeps timing-sensitive tests stable.
    threadpoolctl.threadpool_limits(1)
except ImportError:
    pass
