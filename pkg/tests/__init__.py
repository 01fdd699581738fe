# Init for tests
