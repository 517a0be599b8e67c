"""Bundled demo data; see :func:`betaquant.simulate.paper_scale_fixture`."""
