# Vote-Share Toolkit — Tests Package
