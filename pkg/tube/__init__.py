# This file makes 'tube' a package
