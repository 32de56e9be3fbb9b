# This file makes 'cli' a package
