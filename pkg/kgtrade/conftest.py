def pytest_configure(config):
    config.addinivalue_line(
        'markers', 'slow: full-size statistical and scaling runs; '
                   'deselect with -m "not slow"')
